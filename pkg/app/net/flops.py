"""
FLOP Accountant

Closed-form attention complexity of the three branches, evaluated in exact
rational arithmetic. For one multi-head self-attention over a sequence of
length N with C channels:

    MSA(N, C) = 4*N*C^2 + 2*N^2*C

Each branch works on C/3 channels of a T x H x W feature map:

    LBA  = (4/9)*HWTC^2 + (2/3)*G^2*HWTC
    GSA  = (4/9)*HWTC^2 + (2/3)*G^2*HWTC
    GTA  = (4/9)*HWTC^2 + (2/3)*HWT^2*C
    BSTF = LBA + GSA + GTA
    GMSA = 4*HWTC^2 + 2*(HWT)^2*C      (full spatio-temporal attention)

LBA is reported with the grid count G in place of the window size S, so
LBA == GSA always; count_attention_macs measures LBA with its real window
size and agrees with the closed form when S == G. H and W are the extents
the attention runs at. Counts are multiply-accumulate
units: the 4*N*C^2 term covers the Q, K, V and output projections and the
second term the score and value products, which is exactly what
count_attention_macs measures on the executed ops.
"""
import logging
from fractions import Fraction

import numpy as np
from pydantic import BaseModel, model_validator

from app.core.ops import count_macs
from app.errors import ConfigError
from app.net import attention
from app.net.attention import AttentionParams
from app.net.network import count_parameters
from app.net.networkConfiguration import NetworkConfig

logger = logging.getLogger(__name__)


class FlopReport(BaseModel):
    omega_lba: int
    omega_gsa: int
    omega_gta: int
    omega_bstf: int
    omega_gmsa: int
    params: int = 0

    @model_validator(mode="after")
    def _total_is_branch_sum(self) -> "FlopReport":
        if self.omega_bstf != self.omega_lba + self.omega_gsa + self.omega_gta:
            raise ValueError("omega_bstf must equal omega_lba + omega_gsa + omega_gta")
        return self

    def render(self) -> str:
        rows = [
            ("LBA", self.omega_lba),
            ("GSA", self.omega_gsa),
            ("GTA", self.omega_gta),
            ("BSTF", self.omega_bstf),
            ("G-MSA", self.omega_gmsa),
            ("params", self.params),
        ]
        return "\n".join(f"{name:<8}{value:>20,}" for name, value in rows)


def msa_complexity(sequence: int, channels: int) -> int:
    return 4 * sequence * channels**2 + 2 * sequence**2 * channels


def _exact(value: Fraction, name: str) -> int:
    if value.denominator != 1:
        logger.debug("%s = %s is not integral; rounding", name, value)
    return round(value)


def count_flops(config: NetworkConfig) -> FlopReport:
    h, w, t, c = config.h, config.w, config.t, config.c
    hwt = h * w * t
    projections = Fraction(4, 9) * hwt * c**2
    lba = _exact(projections + Fraction(2, 3) * config.g**2 * hwt * c, "LBA")
    gsa = _exact(projections + Fraction(2, 3) * config.g**2 * hwt * c, "GSA")
    gta = _exact(projections + Fraction(2, 3) * h * w * t**2 * c, "GTA")
    return FlopReport(
        omega_lba=lba,
        omega_gsa=gsa,
        omega_gta=gta,
        omega_bstf=lba + gsa + gta,
        omega_gmsa=msa_complexity(hwt, c),
        params=count_parameters(config),
    )


def count_attention_macs(kind: str, t: int, h: int, w: int, c: int, size: int = 1, heads: int = 1, seed: int = 0) -> int:
    """
    Run one branch's attention on random [t, h, w, c/3] features and count
    the multiply-accumulates of its projections and score/value products.

    ``size`` is the window size S for "lba" and the grid count G for "gsa".
    """
    rng = np.random.default_rng(seed)
    d = c // 3
    x = rng.standard_normal((t, h, w, d))
    params = AttentionParams(
        q=rng.standard_normal((d, d)),
        k=rng.standard_normal((d, d)),
        v=rng.standard_normal((d, d)),
        o=rng.standard_normal((d, d)),
        gamma=np.ones(d),
        beta=np.zeros(d),
    )
    with count_macs() as counts:
        if kind == "lba":
            attention.lba_attention(x, params, size, heads)
        elif kind == "gsa":
            attention.gsa_attention(x, params, size, heads)
        elif kind == "gta":
            attention.gta_attention(x, params, heads)
        else:
            raise ConfigError(f"unknown branch {kind!r}")
    return counts["linear"] + counts["matmul"]
