import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from pndlab import __version__, settings
from pndlab.routes.reconstruction import router as reconstruction_router
from pndlab.routes.simulation import router as simulation_router

logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

app = FastAPI(title="pndlab", version=__version__)

# CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(reconstruction_router)
app.include_router(simulation_router)


@app.get("/api/health")
async def health():
    return {"status": "ok", "version": __version__}


@app.on_event("startup")
async def startup():
    logger.info(f"🚀 pndlab API {__version__} ready (workers={settings.WORKERS}, output={settings.OUTPUT_DIR})")
