"""HTTP scoring service.

POST /v1/score      one trace record -> hallucination probability
POST /v1/arbitrate  {db_category, clf_probability[, threshold]} -> outcome
GET  /healthz       model hash + schema id

Request bodies are parsed by hand rather than through framework validation
so malformed input is a 400 with a field-path diagnostic, while a feature
schema mismatch is a 422 and a missing model a 503. The model snapshot is
immutable and shared read-only across concurrent requests.
"""
from __future__ import annotations

import json
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..arbitration import arbitrate
from ..classifier import TrainedModel
from ..errors import SchemaMismatchError, TraceFormatError, VeritraceError
from ..features import FeatureConfig, assemble_feature_vector, feature_schema
from ..judge import VerdictCategory
from ..trace_model import trace_from_json

_ARBITRABLE = ("Fact", "Hallucination", "JudgmentError", "CoverageGap")


def _schema_from_model(model: TrainedModel):
    desc = model.metadata.get("schema")
    if not desc:
        return None
    return feature_schema(
        desc["model_ids"], desc["k"], [tuple(p) for p in desc["pairs"]]
    )


def build_app(
    model: Optional[TrainedModel] = None,
    feature_config: FeatureConfig = FeatureConfig(),
    model_hash: str = "",
) -> FastAPI:
    app = FastAPI(title="veritrace", docs_url=None, redoc_url=None)
    app.state.model = model
    app.state.schema = _schema_from_model(model) if model is not None else None
    app.state.feature_config = feature_config
    app.state.model_hash = model_hash

    def _error(status: int, detail: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"detail": detail})

    @app.get("/healthz")
    def healthz():
        if app.state.model is None:
            return _error(503, "model not loaded")
        return {
            "status": "ok",
            "model_hash": app.state.model_hash,
            "schema_id": app.state.model.schema_id,
        }

    @app.post("/v1/score")
    async def score(request: Request):
        if app.state.model is None:
            return _error(503, "model not loaded")
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return _error(400, f"malformed JSON body: {exc}")
        try:
            trace = trace_from_json(body)
        except TraceFormatError as exc:
            return _error(400, f"malformed trace record: {exc}")
        schema = app.state.schema
        if schema is None:
            return _error(503, "model carries no schema description")
        try:
            vector = assemble_feature_vector(trace, schema, app.state.feature_config)
        except SchemaMismatchError as exc:
            return _error(422, f"schema mismatch: {exc}")
        except VeritraceError as exc:
            return _error(400, f"cannot extract features: {exc}")
        probability = float(app.state.model.predict_proba_matrix(vector.values[None, :])[0])
        return {
            "hallucination_probability": probability,
            "schema_id": app.state.model.schema_id,
            "warnings": vector.warnings,
        }

    @app.post("/v1/arbitrate")
    async def arbitrate_endpoint(request: Request):
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return _error(400, f"malformed JSON body: {exc}")
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object")
        for field in ("db_category", "clf_probability"):
            if field not in body:
                return _error(400, f"missing field '{field}'")
        if body["db_category"] not in _ARBITRABLE:
            return _error(400, f"db_category must be one of {list(_ARBITRABLE)}")
        try:
            probability = float(body["clf_probability"])
        except (TypeError, ValueError):
            return _error(400, "clf_probability must be a number")
        threshold = body.get("threshold", 0.5)
        try:
            outcome = arbitrate(
                VerdictCategory(body["db_category"]),
                probability,
                threshold=float(threshold),
                answer_id=str(body.get("answer_id", "")),
            )
        except VeritraceError as exc:
            return _error(400, str(exc))
        return outcome.to_json()

    return app


def app_from_files(model_path, feature_config: FeatureConfig = FeatureConfig()) -> FastAPI:
    from ..classifier import load_model, model_file_hash

    model = load_model(model_path)
    return build_app(
        model=model,
        feature_config=feature_config,
        model_hash=model_file_hash(model_path),
    )
