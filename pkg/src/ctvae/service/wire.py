"""Versioned request/response bodies. Unknown fields are rejected."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict

SCHEMA_VERSION = "1"
MAX_IMAGE_B64_BYTES = 4 * 1024 * 1024


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EncodeRequest(StrictModel):
    schema_version: str = SCHEMA_VERSION
    image: str  # base64 PNG


class CodeSummary(StrictModel):
    grid: list[int]  # (H, W, C)
    indices: list[int]  # node-ordered


class EncodeResponse(StrictModel):
    schema_version: str = SCHEMA_VERSION
    session: str
    code: CodeSummary
    reconstruction: str  # base64 PNG


class InterveneRequest(StrictModel):
    schema_version: str = SCHEMA_VERSION
    action: str
    samples: int = 1
    seed: int = 0


class HeatmapData(StrictModel):
    shape: list[int]
    probabilities: list[float]


class InterveneResponse(StrictModel):
    schema_version: str = SCHEMA_VERSION
    step: int
    image: str
    changed_nodes: int
    adjacency: HeatmapData


class AttributeRequest(StrictModel):
    schema_version: str = SCHEMA_VERSION
    image_x: str
    image_y: str
    samples: Optional[int] = None
    seed: int = 0


class AttributeResponse(StrictModel):
    schema_version: str = SCHEMA_VERSION
    q: dict[str, float]
    scores: dict[str, float]
    chosen: str


class ActionsResponse(StrictModel):
    schema_version: str = SCHEMA_VERSION
    actions: list[str]
    null_action: str = "null"


class HistoryStep(StrictModel):
    step: int
    action: str
    image: str
    changed_nodes: int


class HistoryResponse(StrictModel):
    schema_version: str = SCHEMA_VERSION
    session: str
    steps: list[HistoryStep]


class ModelResponse(StrictModel):
    schema_version: str = SCHEMA_VERSION
    checkpoint: dict
    factors: list[list]
    image_size: list[int]
    channels: int
    masks: dict[str, HeatmapData]  # per-action gate probabilities, H x W
