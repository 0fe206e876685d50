# Infrastructure Layer - External Dependencies

from .checkpoint_store import CheckpointStore, KgeModelStore
from .config import settings
from .excel_renderer import ExcelRenderer
from .report_writer import read_metric_csv, write_metric_csv, write_table
from .run_storage import FileRunStore
from .tsv_reader import load_interactions, load_item_links, load_triples

__all__ = [
    "settings",
    "CheckpointStore",
    "KgeModelStore",
    "ExcelRenderer",
    "FileRunStore",
    "load_interactions",
    "load_item_links",
    "load_triples",
    "read_metric_csv",
    "write_metric_csv",
    "write_table",
]
