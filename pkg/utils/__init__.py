# Import utility modules for easier access
from .config_manager import ConfigManager, RunConfig
from .output_formatter import TermColors, format_error, format_verify_table, write_table
