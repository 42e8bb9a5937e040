"""flexgrid: demand-response dispatch of flexible loads on radial LV grids."""

__version__ = "0.1.0"
