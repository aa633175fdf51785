from .settings import settings  # noqa: F401
