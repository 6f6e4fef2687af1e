"""Software-defined Open eXchange Point controller.

Layer 2 circuits between customer edge connectors, IP transit via
BGP-route-to-flow translation, a simulated multi-switch data plane with
intent-based path compilation, failure reroute and controller
mastership failover.
"""

from .controller import Controller

__version__ = "0.1.0"

__all__ = ["Controller", "__version__"]
