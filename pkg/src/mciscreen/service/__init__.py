"""HTTP service exposing the screening pipeline (FastAPI + pydantic models)."""
