# SPDX-License-Identifier: Apache-2.0
"""Reference SSIM values from scikit-image for the metrics tests."""

import numpy as np
from skimage.metrics import structural_similarity

NX, NY, NZ = 16, 14, 3


def main():
    rng = np.random.default_rng(2024)
    xs = np.arange(NX)[:, None, None]
    ys = np.arange(NY)[None, :, None]
    zs = np.arange(NZ)[None, None, :]
    x = 1.0 + 0.6 * np.sin(0.4 * xs + 0.3 * zs) * np.cos(0.25 * ys) + 0.05 * rng.standard_normal((NX, NY, NZ))
    y = x + 0.15 * rng.standard_normal((NX, NY, NZ))
    x = np.clip(x, 0, 2)
    y = np.clip(y, 0, 2)
    per_slice = [
        structural_similarity(x[:, :, z], y[:, :, z], gaussian_weights=True, sigma=1.5,
                              use_sample_covariance=False, data_range=2.0)
        for z in range(NZ)
    ]
    with open("ssim_pair.txt", "w") as f:
        f.write(f"{NX} {NY} {NZ}\n")
        f.write(" ".join(repr(float(v)) for v in x.ravel()) + "\n")
        f.write(" ".join(repr(float(v)) for v in y.ravel()) + "\n")
        f.write(" ".join(repr(float(v)) for v in per_slice) + "\n")
        f.write(repr(float(np.mean(per_slice))) + "\n")


if __name__ == "__main__":
    main()
