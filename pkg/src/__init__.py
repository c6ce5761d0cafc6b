"""adsnull - characteristic evolution of Einstein-massless Vlasov spacetimes with a reflecting AdS boundary."""

__version__ = "1.0.0"
__author__ = "adsnull developers"
__description__ = "Double-null simulator, initial-data construction, AdS geodesic oracle and stability norm for spherically symmetric Einstein-Vlasov with negative cosmological constant"
