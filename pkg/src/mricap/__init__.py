"""Resource adequacy simulation and capacity accreditation by marginal reliability impact."""

__version__ = "0.1.0"
