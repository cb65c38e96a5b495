"""
Runtime settings.
Read once from the environment (and optional .env files) at import time.
"""
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()
load_dotenv(Path(__file__).resolve().parent / ".env")


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


LOG_LEVEL = os.getenv("PNDLAB_LOG_LEVEL", "INFO").upper()
OUTPUT_DIR = Path(os.getenv("PNDLAB_OUTPUT_DIR", "runs"))
WORKERS = max(1, _int_env("PNDLAB_WORKERS", os.cpu_count() or 1))
EM_LOG_EVERY = max(1, _int_env("PNDLAB_EM_LOG_EVERY", 1000))
# the simulate endpoint runs synchronously
API_MAX_TRAJ = max(1, _int_env("PNDLAB_API_MAX_TRAJ", 500))
API_MAX_NF = max(1, _int_env("PNDLAB_API_MAX_NF", 10))
CORS_ORIGINS = [
    o.strip() for o in os.getenv("PNDLAB_CORS_ORIGINS", "http://localhost:3000").split(",") if o.strip()
]
