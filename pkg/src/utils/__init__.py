from src.utils.batch import format_summary, parse_int_list
from src.utils.helpers import cleanup_temp_files, get_file_size_mb, write_json

__all__ = ["format_summary", "parse_int_list", "cleanup_temp_files", "get_file_size_mb", "write_json"]
