# -*- coding: utf-8 -*-

"""Exceptions raised by dynstg_mamba"""


class DynSTGError(Exception):
    """Base class for all dynstg_mamba errors.

    Attributes
    ----------
    fold : int or None
        Cross-validation fold the error was raised in, attached by the
        cross-validation driver.
    """
    fold = None

    def __str__(self):
        message = super(DynSTGError, self).__str__()
        if self.fold is not None:
            return "fold %d: %s" % (self.fold, message)
        return message


class ShapeError(DynSTGError, ValueError):
    """Exception raised when operand shapes do not conform to an
    operation's shape rule"""


class DomainError(DynSTGError, ValueError):
    """Exception raised when an operation is evaluated outside its
    domain, e.g. a softmax over an empty axis"""


class ContractError(DynSTGError, ValueError):
    """Exception raised when a documented precondition is violated"""


class ConfigError(DynSTGError):
    """Exception raised for invalid run or model configuration"""


class DataError(DynSTGError):
    """Exception raised when a sequence record is malformed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending record.
    field : str or None
        Name of the offending field.
    """

    def __init__(self, message, line=None, field=None):
        super(DataError, self).__init__(message)
        self.line = line
        self.field = field


class SchemaError(DataError):
    """Exception raised when records disagree on the joint count"""


class CheckpointError(DynSTGError):
    """Exception raised when a checkpoint cannot be loaded or does not
    match the expected topology"""


class DivergenceError(DynSTGError):
    """Exception raised when the training loss becomes non-finite.

    Attributes
    ----------
    epoch : int
        Epoch in which the loss diverged.
    state : dict
        Last parameter snapshot that produced a finite loss.
    """

    def __init__(self, message, epoch, state):
        super(DivergenceError, self).__init__(message)
        self.epoch = epoch
        self.state = state
