"""Boolean function analysis, lifted majority classes and a block-table weak learner."""

__version__ = "0.1.0"
