"""REST service, command-line interface, and synthetic fixture generation."""
from .fixtures import FixtureSpec, generate_fixtures, seating_mask_with_area, synthetic_board
from .service import ApiError, GatewayConfig, GatewayContext, create_app, serve

__all__ = [
    "ApiError", "FixtureSpec", "GatewayConfig", "GatewayContext",
    "create_app", "generate_fixtures", "seating_mask_with_area",
    "serve", "synthetic_board",
]
