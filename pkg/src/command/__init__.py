from src.command.parser import CommandParser
from src.command.executor import CommandExecutor

__all__ = ["CommandParser", "CommandExecutor"]
