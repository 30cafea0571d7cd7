"""Raster round trip and a wells-driven run on a file coefficient.

    python3 demos/raster_workflow.py [path/to/slice.txt]

Without an argument a channel field is generated and written to a temporary
file first; the run then goes through the same loader a user slice would.
"""
import sys
import tempfile
from pathlib import Path

from mixed_msgfem import RunConfig, Experiment, generate_highcontrast, load_raster, save_raster

if len(sys.argv) > 1:
    path = Path(sys.argv[1])
else:
    path = Path(tempfile.mkdtemp()) / "channels.txt"
    save_raster(generate_highcontrast(60, 60, "channels", 1e3, seed=2), path, comment="demo field")

field = load_raster(path)
print(f"{path}: {field.nx}x{field.ny}, alpha0={field.alpha0:g}, alpha1={field.alpha1:g}, "
      f"contrast={field.contrast:g}")

n = 2 * field.nx if field.nx <= 60 else field.nx
cfg = RunConfig(n=n, m=6, ell=8, n_loc=6, coefficient=f"file:{path}", source="wells")
row = Experiment(cfg).run()
print(f"n={n}: fine dofs {row.dofs_fine}, coarse dofs {row.dofs_coarse}, gamma {row.gamma_used:g}")
print(f"error_v {row.error_v:.3e}  error_p {row.error_p:.3e}  error_div {row.error_div:.3e}  "
      f"mass defect {row.mass_defect:.1e}")
