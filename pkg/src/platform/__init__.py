from src.platform.compatibility import PlatformChecker

__all__ = ["PlatformChecker"]
