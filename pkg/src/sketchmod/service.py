"""HTTP/JSON service over the edit toolkit.

Endpoints: GET /health, GET /model, POST /edit, POST /normalize,
POST /reconstruct. The model snapshot is read-only and shared across
requests; responses are deterministic for identical (request, seed,
checkpoint). Wire-schema violations return 400 with the failing field path,
a missing model returns 409, and domain errors (bad stroke index, non-finite
override, degenerate geometry) return 422.
"""

from __future__ import annotations

import base64
import io
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .checkpoint import config_hash, params_hash
from .data import sketch_from_dict, sketch_to_dict
from .editkit import EditRequest, ModelNotLoaded, apply_edit
from .geometry import Stroke, StrokeAttributes, normalize_stroke

WIRE_VERSION = 1


# ------------------------------------------------------------------- schemas


class StrokeWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    points: list[tuple[float, float]] = Field(min_length=1)
    pen: list[int]

    def to_stroke(self):
        return Stroke(
            np.asarray(self.points, dtype=np.float64),
            np.asarray(self.pen, dtype=np.int64),
        )

    @classmethod
    def from_stroke(cls, stroke):
        return cls(points=[tuple(p) for p in stroke.points.tolist()], pen=stroke.pen.tolist())


class SketchWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int = WIRE_VERSION
    strokes: list[StrokeWire] = Field(min_length=1)

    def to_sketch(self):
        return sketch_from_dict(self.model_dump())

    @classmethod
    def from_sketch(cls, sketch):
        return cls.model_validate(sketch_to_dict(sketch))


class AttributesWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: float
    b: float
    theta: float
    log_tau1: float
    log_tau2: float

    @classmethod
    def from_attributes(cls, attrs: StrokeAttributes):
        v = attrs.as_vector()
        return cls(a=v[0], b=v[1], theta=v[2], log_tau1=v[3], log_tau2=v[4])


class AttributeOverrideWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: Optional[float] = None
    b: Optional[float] = None
    theta: Optional[float] = None
    log_tau1: Optional[float] = None
    log_tau2: Optional[float] = None

    def to_overrides(self):
        return {k: v for k, v in self.model_dump().items() if v is not None}


class EditRequestWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["expand", "replace", "manipulate", "reconstruct"]
    target: SketchWire
    source: Optional[StrokeWire] = None
    replace_index: Optional[int] = None
    attribute_overrides: dict[int, AttributeOverrideWire] = Field(default_factory=dict)
    decode_temperature: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    geometry_only: bool = False

    def to_request(self):
        return EditRequest(
            mode=self.mode,
            target=self.target.to_sketch(),
            source=self.source.to_stroke() if self.source else None,
            replace_index=self.replace_index,
            attribute_overrides={
                k: v.to_overrides() for k, v in self.attribute_overrides.items()
            },
            decode_temperature=self.decode_temperature or None,
            seed=self.seed,
            geometry_only=self.geometry_only,
        )


class ReconstructRequestWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sketch: SketchWire
    decode_temperature: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    geometry_only: bool = False


class NormalizeRequestWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stroke: StrokeWire


class EditResultWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: str
    edited: SketchWire
    refined_attributes: Optional[AttributesWire] = None
    source_index: Optional[int] = None
    svg: str
    raster_b64: str
    raster_format: Literal["png"] = "png"
    image_size: int


class NormalizeResultWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    attributes: AttributesWire
    normalized: StrokeWire


class ModelInfoWire(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: dict
    config_hash: str
    params_hash: str
    n_parameters: int


WIRE_SCHEMAS = {
    "stroke": StrokeWire,
    "sketch": SketchWire,
    "attributes": AttributesWire,
    "edit_request": EditRequestWire,
    "edit_result": EditResultWire,
    "normalize_request": NormalizeRequestWire,
    "normalize_result": NormalizeResultWire,
    "reconstruct_request": ReconstructRequestWire,
    "model_info": ModelInfoWire,
}


# ----------------------------------------------------------------- rendering


def raster_to_png_b64(raster):
    from PIL import Image

    gray = np.round(np.clip(raster, 0.0, 1.0) * 255.0).astype(np.uint8)
    img = Image.fromarray(gray, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def result_to_wire(result) -> EditResultWire:
    return EditResultWire(
        mode=result.mode,
        edited=SketchWire.from_sketch(result.edited),
        refined_attributes=(
            AttributesWire.from_attributes(result.refined_attributes)
            if result.refined_attributes is not None
            else None
        ),
        source_index=result.source_index,
        svg=result.svg,
        raster_b64=raster_to_png_b64(result.raster),
        image_size=result.raster.shape[0],
    )


# -------------------------------------------------------------------- errors

# every domain failure is a ValueError or IndexError subclass: EmptyTarget,
# NonFiniteOverride, GeometryError, ParseError, InvalidTemperature,
# IndexOutOfRange; ModelNotLoaded (RuntimeError) maps to 409 separately
DOMAIN_ERRORS = (ValueError, IndexError)


def _error_body(error, message):
    return {"error": error, "message": message}


# ----------------------------------------------------------------------- app


def create_app(model=None, cors_origins=("*",)) -> FastAPI:
    """Build the service around a read-only model snapshot (may be None: only
    /health and geometry-only requests will then succeed)."""
    app = FastAPI(title="sketchmod", version="1.0")
    app.state.model = model
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def on_validation(request: Request, exc: RequestValidationError):
        detail = [
            {"loc": [str(p) for p in err["loc"]], "msg": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(
            status_code=400,
            content={"error": "schema", "detail": detail},
        )

    @app.exception_handler(ModelNotLoaded)
    async def on_not_loaded(request: Request, exc: ModelNotLoaded):
        return JSONResponse(
            status_code=409, content=_error_body("model_not_loaded", str(exc))
        )

    async def on_domain(request: Request, exc: Exception):
        return JSONResponse(
            status_code=422, content=_error_body(type(exc).__name__, str(exc))
        )

    for exc_type in DOMAIN_ERRORS:
        app.add_exception_handler(exc_type, on_domain)

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/model", response_model=ModelInfoWire)
    async def model_info():
        m = app.state.model
        if m is None:
            raise ModelNotLoaded("no checkpoint loaded")
        state = m.state_dict()
        return ModelInfoWire(
            config=m.cfg.to_dict(),
            config_hash=config_hash(m.cfg.to_dict()),
            params_hash=params_hash(state),
            n_parameters=m.n_parameters(),
        )

    @app.post("/edit", response_model=EditResultWire)
    async def edit(wire: EditRequestWire):
        result = apply_edit(app.state.model, wire.to_request())
        return result_to_wire(result)

    @app.post("/reconstruct", response_model=EditResultWire)
    async def reconstruct_endpoint(wire: ReconstructRequestWire):
        request = EditRequest(
            mode="reconstruct",
            target=wire.sketch.to_sketch(),
            decode_temperature=wire.decode_temperature or None,
            seed=wire.seed,
            geometry_only=wire.geometry_only,
        )
        return result_to_wire(apply_edit(app.state.model, request))

    @app.post("/normalize", response_model=NormalizeResultWire)
    async def normalize(wire: NormalizeRequestWire):
        ns, attrs = normalize_stroke(wire.stroke.to_stroke())
        return NormalizeResultWire(
            attributes=AttributesWire.from_attributes(attrs),
            normalized=StrokeWire.from_stroke(ns.stroke),
        )

    return app


def serve(checkpoint_path, host="127.0.0.1", port=8423, cors_origins=("*",)):
    """Load the checkpoint and serve until interrupted."""
    import uvicorn

    from .training import load_model

    model, _ = load_model(checkpoint_path)
    app = create_app(model, cors_origins=cors_origins)
    uvicorn.run(app, host=host, port=port)
    return app


def export_schemas(out_dir):
    """Write every wire schema as a JSON Schema document."""
    import json
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, wire_model in WIRE_SCHEMAS.items():
        path = os.path.join(out_dir, f"{name}.schema.json")
        with open(path, "w") as fh:
            json.dump(wire_model.model_json_schema(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths[name] = path
    return paths
