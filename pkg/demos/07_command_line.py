"""The batch driver on the reference configurations in ``configs/``.

Equivalent shell usage::

    surfeig mesh  --config configs/bmg_direct.cfg --out runs/meshes
    surfeig solve --config configs/bmg_direct.cfg --out runs/bmg_direct --threads 1
    surfeig report runs/*/report.json --out runs/summary
"""

import csv
from pathlib import Path

from _common import output_dir
from surfeig.cli import main

out = output_dir("runs")
configs = sorted((Path(__file__).parent / "configs").glob("*.cfg"))
assert main(["mesh", "--config", str(configs[0]), "--out", str(out / "meshes")]) == 0
for cfg in configs:
    code = main(["solve", "--config", str(cfg), "--out", str(out / cfg.stem), "--threads", "1"])
    with open(out / cfg.stem / "rates.csv") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{cfg.stem:>22} (exit {code}): "
          + "  ".join(f"{float(r['lambda']):g}: {float(r['rate']):.4f}" for r in rows))
main(["report", *(str(out / c.stem / "report.json") for c in configs),
      "--out", str(out / "summary")])
print("rate table:", out / "summary" / "rate_table.csv")
