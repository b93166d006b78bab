"""Rain-fade event prediction and smart gateway diversity simulation."""

__version__ = "0.1.0"
