"""Assembly Forge: authoring, verification, and simulated execution of
box-compound robotic assemblies."""

__version__ = "0.1.0"
