"""Regenerate the packaged series-based critical table of the classical kinds."""
from pathlib import Path

from gofstab.asymptotics import build_classical_table

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "gofstab" / "data" / "classical_critical.csv"
    build_classical_table().to_csv(out)
