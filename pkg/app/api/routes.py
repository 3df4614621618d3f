"""
API Routes Module

HTTP surface over the toolkit: the attention complexity report, mask
generation with validation, and GAP-TV decoding of uploaded STNS tensors.

Toolkit errors become 400 responses carrying the error message; uploads
larger than the configured limit are rejected with 413.
"""
import logging
from typing import List, Optional

from fastapi import APIRouter, File, Form, HTTPException, UploadFile
from fastapi.responses import Response
from pydantic import BaseModel, Field, ValidationError

from app.config import app_config, sensing_defaults
from app.core.container import decode_tensor, encode_tensor
from app.errors import SciError
from app.net.flops import FlopReport, count_flops
from app.net.networkConfiguration import NetworkConfig
from app.recon.gaptv import GapTvConfig, gap_tv_decode
from app.sensing.domain import MaskScheme, MaskSet, Measurement
from app.sensing.masks import MaskReport, gen_rs, gen_uss, validate

logger = logging.getLogger(__name__)

# Create API router with version prefix for future API versioning
router = APIRouter(prefix=f"/api/{app_config.API_VERSION}")

STNS_MEDIA_TYPE = "application/octet-stream"


class FlopsRequest(BaseModel):
    """Extents and window sizes of the feature map attention runs on."""

    t: int = Field(ge=1)
    h: int = Field(ge=2)
    w: int = Field(ge=2)
    c: int = Field(ge=1)
    s: int = Field(default=4, ge=1)
    g: int = Field(default=4, ge=1)
    heads: int = Field(default=1, ge=1)


class MaskRequest(BaseModel):
    scheme: MaskScheme
    t: int = Field(ge=1)
    h: int = Field(ge=1)
    w: int = Field(ge=1)
    seed: int = Field(default=0, ge=0)
    density: float = sensing_defaults.RS_DENSITY


class MaskResponse(BaseModel):
    scheme: MaskScheme
    extents: List[int]
    seed: int
    report: MaskReport
    coverage_min: float
    coverage_max: float


def _bad_request(error: Exception) -> HTTPException:
    logger.warning("Rejected request: %s", error)
    return HTTPException(status_code=400, detail=str(error))


async def _read_tensor(upload: UploadFile):
    data = await upload.read()
    if len(data) > app_config.MAX_UPLOAD_SIZE_MB * 1024 * 1024:
        raise HTTPException(status_code=413, detail=f"{upload.filename} exceeds {app_config.MAX_UPLOAD_SIZE_MB} MB")
    return decode_tensor(data)


@router.post("/flops", response_model=FlopReport)
async def flops(request: FlopsRequest):
    """Analytic Ω counts for the three branches and their sum."""
    try:
        config = NetworkConfig(**request.model_dump())
        return count_flops(config)
    except (SciError, ValidationError) as e:
        raise _bad_request(e)


@router.post("/masks", response_model=MaskResponse)
async def masks(request: MaskRequest):
    """Generate a mask set and report its validation result."""
    try:
        if request.scheme == MaskScheme.RS:
            m = gen_rs(request.t, request.h, request.w, density=request.density, seed=request.seed)
        else:
            m = gen_uss(request.t, request.h, request.w, seed=request.seed)
    except SciError as e:
        raise _bad_request(e)
    coverage = m.coverage()
    return MaskResponse(
        scheme=m.scheme,
        extents=list(m.extents),
        seed=m.seed,
        report=validate(m),
        coverage_min=float(coverage.min()),
        coverage_max=float(coverage.max()),
    )


@router.post("/decode/gap-tv")
async def decode_gap_tv(
    measurement: UploadFile = File(...),
    masks: UploadFile = File(...),
    scheme: MaskScheme = Form(...),
    iterations: Optional[int] = Form(None),
):
    """
    Decode an analog measurement [H, W] with the uploaded ideal masks [T, H, W].

    Returns the reconstructed video as an f32 STNS tensor.
    """
    try:
        y = Measurement(values=await _read_tensor(measurement))
        m = MaskSet(scheme=scheme, masks=await _read_tensor(masks))
        cfg = GapTvConfig() if iterations is None else GapTvConfig(iterations=iterations)
        cube = gap_tv_decode(y, m, cfg)
    except (SciError, ValidationError, ValueError) as e:
        raise _bad_request(e)
    logger.info("Decoded %s measurement into %s frames", y.extents, cube.extents)
    return Response(content=encode_tensor(cube.frames.astype("float32")), media_type=STNS_MEDIA_TYPE)
