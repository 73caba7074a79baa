"""Exporter bridging pretrained vision classifiers to the .selc container."""

from .export import ExportJob, ExportResult, export

__all__ = ["ExportJob", "ExportResult", "export"]
__version__ = "0.1.0"
