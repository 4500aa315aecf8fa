"""Benchmark models, file formats and order sweeps."""

from .io import emit_csv, load_model, read_csv, read_manifest, read_matrix_market, save_model, write_matrix_market
from .models import ModelBundle, generate_heat_like, generate_unstable_toy
from .sweep import ErrorTable, ImpulseTrace, SweepRow, SweepSpec, impulse_error_trace, run_sweep
