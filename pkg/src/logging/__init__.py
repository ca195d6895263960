from src.logging.logger_config import LoggerConfig, logger, run_log

__all__ = ["LoggerConfig", "logger", "run_log"]
