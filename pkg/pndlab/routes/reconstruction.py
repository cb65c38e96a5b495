"""
API Routes for Reconstruction
=============================
Synthetic click tables, EM reconstruction, metrics and source-model fits.
"""
import logging

from fastapi import APIRouter, HTTPException
from pydantic import ValidationError

from pndlab import io, pipeline
from pndlab.errors import NumericalError, PndLabError, error_payload
from pndlab.forward import ClickTable
from pndlab.models import FitRequest, PndPayload, ReconstructRequest, SynthConfig

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api", tags=["Reconstruction"])


def http_error(e: Exception, command: str) -> HTTPException:
    """400 for invalid input, 422 for numerical failures, 500 for anything else."""
    if isinstance(e, NumericalError):
        status = 422
    elif isinstance(e, (PndLabError, ValidationError)):
        status = 400
    else:
        logger.exception(f"{command} crashed")
        return HTTPException(status_code=500, detail=str(e))
    logger.error(f"❌ {command} failed ({status}): {e}")
    return HTTPException(status_code=status, detail=error_payload(e, command))


@router.post("/synth")
def synth(request: SynthConfig):
    """Sample (or compute exactly) a click table from a model source."""
    try:
        result = pipeline.synth(request)
    except Exception as e:
        raise http_error(e, "synth")
    return {
        "rows": [row.model_dump() for row in result.table.rows],
        "truth": io.pnd_records(result.truth),
        "provenance": result.provenance.model_dump(mode="json"),
    }


@router.post("/reconstruct")
def reconstruct(request: ReconstructRequest):
    """
    EM reconstruction of the posted rows.

    - config.plane: resonator | chip | detector
    - config.mode: joint | signal | idler
    """
    try:
        result = pipeline.reconstruct(ClickTable(rows=request.rows), request.config)
    except Exception as e:
        raise http_error(e, "reconstruct")
    return {
        "pnd": io.pnd_records(result.pnd),
        "diagnostics": result.diagnostics.model_dump(mode="json"),
        "segment": result.segment,
    }


@router.post("/metrics")
def metrics(request: PndPayload):
    try:
        report = pipeline.metrics(io.pnd_from_records(request.records))
    except Exception as e:
        raise http_error(e, "metrics")
    return report.model_dump(mode="json")


@router.post("/fit")
def fit(request: FitRequest):
    try:
        report = pipeline.fit(io.pnd_from_records(request.pnd.records), request.config)
    except Exception as e:
        raise http_error(e, "fit")
    return report.model_dump(mode="json")
