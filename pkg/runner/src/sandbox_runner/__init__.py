from .runner import (
    DEFAULT_ALLOWED_IMPORTS,
    PROTOCOL_VERSION,
    handle_check,
    handle_request,
    handle_run,
    main,
)

__all__ = [
    "DEFAULT_ALLOWED_IMPORTS",
    "PROTOCOL_VERSION",
    "handle_check",
    "handle_request",
    "handle_run",
    "main",
]
