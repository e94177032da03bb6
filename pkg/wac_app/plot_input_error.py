from .wac_error import WacError


class PlotInputError(WacError):
    """CSV handed to the plotter is malformed; message names row and column."""
    pass
