"""Exception types raised across the package."""


class AcmError(ValueError):
    """Base class for all library errors."""


class DegenerateQuad(AcmError):
    pass


class ZeroVector(AcmError):
    """Encoded angle components too close to the origin to decode."""


class NonSPD(AcmError):
    pass


class LengthMismatch(AcmError):
    pass


class MalformedLine(AcmError):
    def __init__(self, lineno, content, reason=""):
        self.lineno = lineno
        self.content = content
        msg = f"line {lineno}: {content!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class DivergedTraining(AcmError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
