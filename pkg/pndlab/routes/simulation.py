"""
API Routes for Simulation
=========================
"""
from fastapi import APIRouter

from pndlab import io, pipeline
from pndlab.models import SimulateRequest
from pndlab.routes.reconstruction import http_error

router = APIRouter(prefix="/api", tags=["Simulation"])


@router.post("/simulate")
def simulate(request: SimulateRequest):
    """Trajectory simulation; runs synchronously within the PNDLAB_API_MAX_TRAJ and PNDLAB_API_MAX_NF limits."""
    try:
        result = pipeline.simulate(request)
    except Exception as e:
        raise http_error(e, "simulate")
    body = result.summary()
    body["pnd"] = io.pnd_records(result.pnd)
    body["provenance"] = result.provenance.model_dump(mode="json")
    return body
