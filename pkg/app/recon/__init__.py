from .metrics import MetricsResult, compare, psnr, ssim
from .gaptv import GapTvConfig, GapTvResult, gap_tv_decode, gap_tv_solve, tv_denoise
from .decode import decode
