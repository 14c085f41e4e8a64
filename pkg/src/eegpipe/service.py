"""HTTP service exposing the pipeline commands.

Every command endpoint is a POST taking filesystem paths plus inline
config, mirroring the pipeline functions one-to-one. Error mapping:
usage errors (bad config) -> 400, data errors (unreadable or
inconsistent inputs) -> 422, numeric failures -> 500, all carrying
{"error": {"kind", "message"}} bodies.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .channels import PRESET_NAMES, preset
from .errors import EegPipeError
from .montage import default_tcp_montage
from .pipeline import (
    DEFAULT_ROC_POINTS,
    run_features,
    run_grid,
    run_infer,
    run_score,
    run_synth,
    run_train,
)

app = FastAPI(title="eegpipe", version=__version__)

_STATUS_BY_KIND = {"usage": 400, "data": 422, "numeric": 500}


@app.exception_handler(EegPipeError)
async def _pipeline_error(request: Request, exc: EegPipeError) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_BY_KIND.get(exc.kind, 500),
        content={"error": {"kind": exc.kind, "message": str(exc)}},
    )


@app.exception_handler(RequestValidationError)
async def _validation_error(request: Request, exc: RequestValidationError) -> JSONResponse:
    first = exc.errors()[0] if exc.errors() else {}
    where = ".".join(str(p) for p in first.get("loc", ()))
    message = f"{where}: {first.get('msg', 'invalid request')}" if where \
        else "invalid request"
    return JSONResponse(
        status_code=400,
        content={"error": {"kind": "usage", "message": message}},
    )


# -- requests -------------------------------------------------------------------

class SynthRequest(BaseModel):
    config: dict = Field(default_factory=dict)
    out_dir: str


class FeaturesRequest(BaseModel):
    in_dir: str
    out_dir: str
    montage: str = "tcp"
    preset: str = "ch22"
    feature_config: dict | None = None


class TrainRequest(BaseModel):
    features_dir: str
    labels_dir: str
    out_path: str
    spec: dict = Field(default_factory=dict)
    seed: int = 0
    workers: int = 1


class InferRequest(BaseModel):
    ckpt: str
    features_dir: str
    out_dir: str
    spec: dict | None = None
    segment_len: int = 60


class ScoreRequest(BaseModel):
    ref_dir: str
    hyp_dir: str
    out_dir: str | None = None
    postprocess: dict = Field(default_factory=dict)
    roc_path: str | None = None
    roc_points: int = DEFAULT_ROC_POINTS


class GridRequest(BaseModel):
    presets: list[str]
    train_dir: str
    test_dir: str
    out_dir: str
    montage: str = "tcp"
    spec: dict = Field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    postprocess: dict = Field(default_factory=dict)


# -- responses ------------------------------------------------------------------

class HealthResponse(BaseModel):
    status: str
    version: str


class PresetInfo(BaseModel):
    name: str
    channels: list[str]
    count: int


class PresetsResponse(BaseModel):
    presets: list[PresetInfo]


class MontageResponse(BaseModel):
    name: str
    pairs: list[str]


class SynthResponse(BaseModel):
    out_dir: str
    recordings: list[str]
    events: int
    config_hash: str


class FeaturesResponse(BaseModel):
    out_dir: str
    recordings: list[str]
    channels: int
    epochs: int
    config_hash: str


class TrainResponse(BaseModel):
    checkpoint: str
    loss_curve: str
    channels: int
    conv_layers: int
    parameters: int
    batches: int
    final_loss: float
    config_hash: str


class InferResponse(BaseModel):
    out_dir: str
    recordings: list[str]
    channels: int
    config_hash: str


class ScoreResponse(BaseModel):
    recordings: list[str]
    report: dict
    roc_csv: str | None = None
    roc_auc: float | None = None
    out_dir: str | None = None
    config_hash: str | None = None


class GridRow(BaseModel):
    preset: str
    channels: int
    conv_layers: int
    sensitivity: float
    specificity: float
    fa_per_24h: float


class GridResponse(BaseModel):
    out_dir: str
    rows: list[GridRow]
    summary_csv: str
    config_hash: str


# -- endpoints ------------------------------------------------------------------

@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.get("/presets", response_model=PresetsResponse)
def presets() -> PresetsResponse:
    infos = []
    for name in PRESET_NAMES:
        cfg = preset(name)
        infos.append(PresetInfo(
            name=name, channels=list(cfg.members), count=len(cfg.members)
        ))
    return PresetsResponse(presets=infos)


@app.get("/montage", response_model=MontageResponse)
def montage() -> MontageResponse:
    spec = default_tcp_montage()
    return MontageResponse(name=spec.name, pairs=list(spec.channel_labels))


@app.post("/synth", response_model=SynthResponse)
def synth(req: SynthRequest) -> SynthResponse:
    return SynthResponse(**run_synth(req.config, req.out_dir))


@app.post("/features", response_model=FeaturesResponse)
def features(req: FeaturesRequest) -> FeaturesResponse:
    return FeaturesResponse(**run_features(
        req.in_dir, req.out_dir, req.montage, req.preset, req.feature_config
    ))


@app.post("/train", response_model=TrainResponse)
def train(req: TrainRequest) -> TrainResponse:
    return TrainResponse(**run_train(
        req.features_dir, req.labels_dir, req.out_path,
        spec_config=req.spec, seed=req.seed, workers=req.workers,
    ))


@app.post("/infer", response_model=InferResponse)
def infer(req: InferRequest) -> InferResponse:
    return InferResponse(**run_infer(
        req.ckpt, req.features_dir, req.out_dir,
        spec_config=req.spec, segment_len=req.segment_len,
    ))


@app.post("/score", response_model=ScoreResponse)
def score(req: ScoreRequest) -> ScoreResponse:
    return ScoreResponse(**run_score(
        req.ref_dir, req.hyp_dir, out_dir=req.out_dir,
        postprocess=req.postprocess, roc_path=req.roc_path,
        roc_points=req.roc_points,
    ))


@app.post("/grid", response_model=GridResponse)
def grid(req: GridRequest) -> GridResponse:
    return GridResponse(**run_grid(
        req.presets, req.train_dir, req.test_dir, req.out_dir,
        montage=req.montage, spec_config=req.spec, seed=req.seed,
        workers=req.workers, postprocess=req.postprocess,
    ))
