"""Image-fidelity metrics and the PSNR convention.

Reflectance rasters live on a [0, 1] scale, so PSNR uses peak 1.0:
PSNR = 20 log10(1 / RMSE).  Statistics pool all bands over the jointly valid
pixels; a perfect match reports the 240 dB cap with a flag rather than
infinity.
"""

import numpy as np

from satfuse import Raster, evaluate, psnr_from_rmse
from satfuse.raster import GeoGrid

rng = np.random.default_rng(0)
grid = GeoGrid(0.0, 8.0, 0.125, 0.125, 64, 64)
truth = Raster(grid, rng.uniform(0.05, 0.6, (8, 64, 64)).astype(np.float32),
               [f"B{i}" for i in range(8)])

# add error of a known size and read the metrics back
for sigma in (0.005, 0.02, 0.08):
    noisy = Raster(grid, (truth.values
                          + sigma * rng.standard_normal(truth.values.shape)).astype(np.float32),
                   truth.band_names)
    rep = evaluate(noisy, truth)
    print(f"sigma={sigma:0.3f}: rmse {rep.rmse:.4f}  mae {rep.mae:.4f}  psnr {rep.psnr:6.2f} dB")

# the convention check: a published pair like RMSE 0.0164 / 35.69 dB
psnr, _ = psnr_from_rmse(0.0164)
print(f"rmse 0.0164 -> {psnr:.2f} dB (printed value 35.69)")

# rule of thumb: > 30 dB means only minor differences, < 24 dB is low quality
for rmse in (0.01, 0.03, 0.08):
    p, _ = psnr_from_rmse(rmse)
    band = "high" if p > 30 else ("moderate" if p > 24 else "low")
    print(f"rmse {rmse:0.2f} -> {p:5.2f} dB ({band})")

# masked pixels never contribute: corrupt a corner, mask it, metrics unchanged
ref = evaluate(truth, truth)
vandalized = truth.copy()
vandalized.values[:, :10, :10] = 1.0
vandalized.mask[:10, :10] = False
rep = evaluate(vandalized, truth)
print(f"identity: rmse {ref.rmse}, capped={ref.psnr_capped}; "
      f"masked corruption: rmse {rep.rmse} over {rep.n_valid} valid pixels")

# per-band breakdown for band-by-band reporting
noisy = Raster(grid, (truth.values
                      + 0.01 * rng.standard_normal(truth.values.shape)).astype(np.float32),
               truth.band_names)
rep = evaluate(noisy, truth, per_band=True)
for name, row in list(rep.per_band.items())[:3]:
    print(f"  {name}: rmse {row['rmse']:.4f} psnr {row['psnr']:.2f}")
