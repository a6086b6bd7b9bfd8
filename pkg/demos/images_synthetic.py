"""Image pipeline on a synthetic digit corpus.

Run:  python demos/images_synthetic.py [outdir] [images.idx labels.idx]

Without arguments a synthetic 28 x 28 corpus stands in for a real one. With
an IDX image file and its label file, those are used instead. Per digit the
script reduces the images to 10 principal components, fits the score on a
periodic basis, samples new component vectors and maps them back to pixels.
Generated images land in ``generated-images.idx`` (one IDX3 file, digits in
order) next to per-digit statistics in ``digits.csv``.
"""
import sys
from pathlib import Path

from ofdiffusion.config import resolve_config
from ofdiffusion.experiments import run_experiment

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-runs") / "images"
over = [("images.synthetic_per_digit", 500), ("images.per_digit", 500)]
if len(sys.argv) > 3:
    over += [("images.idx", sys.argv[2]), ("images.labels", sys.argv[3]), ("images.per_digit", 5000)]
cfg = resolve_config("images", overrides=over)
(row,) = run_experiment(cfg, out, log=print)
print(f"PCA round-trip error {row['max_roundtrip_error']:.1e}, "
      f"loadings orthonormality {row['max_orthonormality_error']:.1e}")
print(f"images in {out / 'generated-images.idx'}")
