from .asset import (
    TOKEN_BLOCK,
    GaussianAsset,
    decode_tokens,
    encode_tokens,
    load_asset,
    save_asset,
)
from .losses import l1_loss, mse, psnr, recon_loss, ssim
from .render import RenderResult, render
from .sh import dc_to_rgb, eval_sh, n_sh_coeffs, rgb_to_dc, sh_basis

__all__ = [
    "TOKEN_BLOCK",
    "GaussianAsset",
    "RenderResult",
    "dc_to_rgb",
    "decode_tokens",
    "encode_tokens",
    "eval_sh",
    "l1_loss",
    "load_asset",
    "mse",
    "n_sh_coeffs",
    "psnr",
    "recon_loss",
    "render",
    "rgb_to_dc",
    "save_asset",
    "sh_basis",
    "ssim",
]
