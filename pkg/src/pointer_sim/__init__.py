"""State-vector decoherence laboratory: mean-field branches, action phases and pointer selection."""

__version__ = "0.1.0"
