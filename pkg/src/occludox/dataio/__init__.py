from .checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from .netpbm import (load_image_dir, load_mask_pgm, quantize_bytes, read_pgm_raw,
                     read_ppm, write_pgm, write_ppm)
from .report import (HEADER, EvaluationReport, ReportRow, format_value,
                     read_report_csv, write_report_csv, write_report_meta)
from .synthetic import Dataset, class_name, gen_synthetic_signs, split_dataset

__all__ = [
    "Dataset", "gen_synthetic_signs", "split_dataset", "class_name",
    "read_ppm", "write_ppm", "read_pgm_raw", "write_pgm", "quantize_bytes",
    "load_mask_pgm", "load_image_dir",
    "save_checkpoint", "load_checkpoint", "MAGIC", "VERSION",
    "EvaluationReport", "ReportRow", "HEADER", "format_value",
    "write_report_csv", "write_report_meta", "read_report_csv",
]
