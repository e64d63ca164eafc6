"""streamscale: scalability characterization and modeling of streaming pipelines."""

__version__ = "0.1.0"
