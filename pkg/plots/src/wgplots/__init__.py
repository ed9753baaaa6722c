"""Figures from watergcn JSON/CSV exports."""

from .manifest import PlotManifest, SchemaMismatch, load_manifest
from .render import (
    build_ecdf_figure, build_figure, build_laplacian_figure,
    build_swarm_figure, build_taylor_figure, render,
)

__version__ = "0.1.0"
