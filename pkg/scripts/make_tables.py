"""Regenerate the bundled Gompertz--Makeham tables in src/tontine/data."""

from pathlib import Path

from tontine.mortality import GOMPERTZ_MAKEHAM, gompertz_makeham_table

OUT = Path(__file__).resolve().parents[1] / "src" / "tontine" / "data"

for sex, params in GOMPERTZ_MAKEHAM.items():
    table = gompertz_makeham_table(**params)
    lines = ["t,p"] + [f"{t:g},{p:.17g}" for t, p in zip(table.times, table.p)]
    (OUT / f"{sex}_2019.csv").write_text("\n".join(lines) + "\n")
    print(sex, "e65 =", round(table.from_age(65).life_expectancy() + 0.5, 2))
