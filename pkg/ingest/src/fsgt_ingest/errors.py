class IngestError(Exception):
    pass


class IngestConfigError(IngestError):
    pass


class IngestDataError(IngestError):
    pass
