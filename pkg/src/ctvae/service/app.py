"""JSON inference API over a loaded checkpoint."""
from __future__ import annotations

import base64
import io
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from ctvae.schema import ActionSpec, ValidationError, action_index, action_set
from ctvae.evaluation import apply_action_to_codes
from ctvae.training.checkpoint import Bundle, load_bundle
from ctvae.service.sessions import SessionStore
from ctvae.service.wire import (
    ActionsResponse,
    AttributeRequest,
    AttributeResponse,
    CodeSummary,
    EncodeRequest,
    EncodeResponse,
    HeatmapData,
    HistoryResponse,
    HistoryStep,
    InterveneRequest,
    InterveneResponse,
    MAX_IMAGE_B64_BYTES,
    ModelResponse,
    SCHEMA_VERSION,
)


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _decode_image(b64: str, expected_size, expected_channels) -> np.ndarray:
    if len(b64) > MAX_IMAGE_B64_BYTES:
        raise ApiError(413, "image payload too large")
    try:
        raw = base64.b64decode(b64, validate=True)
        arr = np.asarray(Image.open(io.BytesIO(raw)))
    except Exception as exc:
        raise ApiError(400, f"cannot decode image: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[..., None]
    h, w = expected_size
    if arr.shape != (h, w, expected_channels):
        raise ApiError(
            400,
            f"expected image of shape {(h, w, expected_channels)}, got {tuple(arr.shape)}",
        )
    return arr.astype(np.float32) / 255.0


def _encode_image(img: np.ndarray) -> str:
    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    pil = Image.fromarray(arr[..., 0], mode="L") if arr.shape[-1] == 1 else Image.fromarray(arr)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def create_app(checkpoint: Union[Path, Bundle], session_capacity: int = 256) -> FastAPI:
    bundle = checkpoint if isinstance(checkpoint, Bundle) else load_bundle(Path(checkpoint))
    layer = bundle.require_ct()
    schema = bundle.schema
    actions = action_set(schema)
    labels = [a.label(schema) for a in actions]
    sessions = SessionStore(capacity=session_capacity)

    app = FastAPI(title="ctvae inference service", version=SCHEMA_VERSION)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    def parse_action(label: str) -> ActionSpec:
        try:
            return ActionSpec.parse(label, schema)
        except ValidationError:
            raise ApiError(400, f"unknown action {label!r}; known: {labels + ['null']}")

    @app.post("/encode", response_model=EncodeResponse)
    def encode(req: EncodeRequest) -> EncodeResponse:
        image = _decode_image(req.image, schema.image_size, schema.channels)
        code = bundle.encode_image(image)
        recon = bundle.decode_grid(code)[0]
        session = sessions.create(code.indices, _encode_image(recon))
        b, h, w, c = code.indices.shape
        return EncodeResponse(
            session=session.session_id,
            code=CodeSummary(grid=[h, w, c], indices=code.flat_indices()[0].tolist()),
            reconstruction=session.steps[0][2],
        )

    @app.post("/sessions/{session_id}/intervene", response_model=InterveneResponse)
    def intervene(session_id: str, req: InterveneRequest) -> InterveneResponse:
        try:
            session = sessions.get(session_id)
        except KeyError:
            raise ApiError(404, f"no session {session_id}")
        action = parse_action(req.action)
        with session.lock:
            code = bundle.mcqvae.quantizer.grid_from_indices(session.current_indices)
            generator = torch.Generator().manual_seed(req.seed)
            new_code, stats = apply_action_to_codes(
                bundle, code, action, generator, samples=req.samples,
            )
            image = bundle.decode_grid(new_code)[0]
            image_b64 = _encode_image(image)
            session.steps.append((req.action, new_code.indices, image_b64, stats["changed_nodes"]))
            step = len(session.steps) - 1
        probs = stats["adjacency_probs"]
        return InterveneResponse(
            step=step,
            image=image_b64,
            changed_nodes=stats["changed_nodes"],
            adjacency=HeatmapData(
                shape=list(probs.shape),
                probabilities=[float(v) for v in probs.reshape(-1)],
            ),
        )

    @app.post("/attribute", response_model=AttributeResponse)
    def attribute(req: AttributeRequest) -> AttributeResponse:
        x = _decode_image(req.image_x, schema.image_size, schema.channels)
        y = _decode_image(req.image_y, schema.image_size, schema.channels)
        generator = torch.Generator().manual_seed(req.seed)
        with torch.no_grad():
            result = layer.attribute_action(
                bundle.encode_image(x), bundle.encode_image(y),
                samples_per_action=req.samples, generator=generator,
            )
        q = result.q[0].tolist()
        scores = result.scores[0].tolist()
        return AttributeResponse(
            q=dict(zip(labels, q)),
            scores=dict(zip(labels, scores)),
            chosen=labels[int(result.chosen[0])],
        )

    @app.get("/actions", response_model=ActionsResponse)
    def list_actions() -> ActionsResponse:
        return ActionsResponse(actions=labels)

    @app.get("/model", response_model=ModelResponse)
    def model_info() -> ModelResponse:
        lh, lw = bundle.mcqvae.cfg.latent_size
        books = bundle.mcqvae.cfg.num_codebooks
        mask_probs = layer.structure.mask_probs().detach().cpu().numpy()
        masks = {}
        for action in actions:
            idx = action_index(schema, action)
            gate = mask_probs[idx].reshape(lh * lw, books).mean(axis=1)
            masks[action.label(schema)] = HeatmapData(
                shape=[lh, lw], probabilities=[float(v) for v in gate],
            )
        return ModelResponse(
            checkpoint=dict(bundle.meta),
            factors=[[name, card] for name, card in schema.factors],
            image_size=list(schema.image_size),
            channels=schema.channels,
            masks=masks,
        )

    @app.get("/sessions/{session_id}/history", response_model=HistoryResponse)
    def history(session_id: str) -> HistoryResponse:
        try:
            session = sessions.get(session_id)
        except KeyError:
            raise ApiError(404, f"no session {session_id}")
        steps = [
            HistoryStep(step=i, action=action, image=image, changed_nodes=changed)
            for i, (action, _, image, changed) in enumerate(session.steps)
        ]
        return HistoryResponse(session=session_id, steps=steps)

    @app.get("/schema")
    def openapi_schema() -> dict:
        return app.openapi()

    return app
