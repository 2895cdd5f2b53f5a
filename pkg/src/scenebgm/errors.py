"""Exception hierarchy shared across the engine."""


class SceneBGMError(Exception):
    """Base class for all engine errors."""


class MalformedJson(SceneBGMError):
    pass


class SchemaViolation(SceneBGMError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigInvalid(SceneBGMError):
    pass


class FatalConfig(ConfigInvalid):
    """Raised before a pipeline starts when its configuration cannot work."""


class BindFailure(SceneBGMError):
    pass


class TimedOut(SceneBGMError):
    pass


class CollectorStopped(SceneBGMError):
    pass


class NoDataEver(SceneBGMError):
    pass


class ScenarioInvalid(SceneBGMError):
    pass


class MissingPlaceholder(SceneBGMError):
    def __init__(self, name):
        super().__init__(f"unbound placeholder {{{name}}}")
        self.name = name


class BackendUnavailable(SceneBGMError):
    def __init__(self, message, status=None, transient=True):
        super().__init__(message)
        self.status = status
        self.transient = transient


class ResponseMalformed(BackendUnavailable):
    def __init__(self, message, status=None):
        super().__init__(message, status=status, transient=False)


class EmptyGeneration(SceneBGMError):
    pass


class SinkUnavailable(SceneBGMError):
    pass


class NoPairs(SceneBGMError):
    pass


class IoFailure(SceneBGMError):
    pass
