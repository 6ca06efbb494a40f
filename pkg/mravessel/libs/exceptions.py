"""Exception class

所有异常都继承自VesselError，命令行与批处理据此统一捕获。
"""

__all__ = [
    'VesselError',
    'InvalidFormat',
    'CorruptFile',
    'UnsupportedDatatype',
    'InvalidIntensity',
    'InvalidGeometry',
    'WriteFailure',
    'EmptySelection',
    'InvalidParameter',
    'InvalidConfig',
    'InvalidPhantom',
]


class VesselError(Exception):
    pass


class InvalidFormat(VesselError):
    pass


class CorruptFile(InvalidFormat):
    pass


class UnsupportedDatatype(InvalidFormat):
    pass


class InvalidIntensity(InvalidFormat):
    pass


class InvalidGeometry(VesselError, ValueError):
    pass


class WriteFailure(VesselError, OSError):
    pass


class EmptySelection(VesselError, ValueError):
    pass


class InvalidParameter(VesselError, ValueError):
    pass


class InvalidConfig(InvalidParameter):
    pass


class InvalidPhantom(InvalidParameter):
    pass
