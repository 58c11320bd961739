class TransportError(Exception):
    default_detail = 'Transport computation failed.'
    default_code = 'error'

    def __init__(self, detail=None, code=None):
        self.detail = detail if detail is not None else self.default_detail
        self.code = code if code is not None else self.default_code
        super().__init__(self.detail)


class InvalidArgument(TransportError):
    default_detail = 'Invalid argument.'
    default_code = 'invalid-argument'


class OutOfDomain(TransportError):
    default_detail = 'Point outside the model domain: {}'
    default_code = 'out-of-domain'

    def __init__(self, what, code=None):
        super().__init__(self.default_detail.format(what), code)


class SingularOpacity(TransportError):
    default_detail = 'Opacity combination is not positive: {}'
    default_code = 'singular-opacity'

    def __init__(self, what, code=None):
        super().__init__(self.default_detail.format(what), code)


class InvalidKernel(TransportError):
    default_detail = 'Collision kernel is not symmetric in (mu, mu\').'
    default_code = 'invalid-kernel'


class StepRejected(TransportError):
    default_detail = 'CFL number {:.3g} exceeds the limit, suggested dt = {:.6g}'
    default_code = 'step-rejected'

    def __init__(self, cfl, suggested_dt, code=None):
        self.cfl = cfl
        self.suggested_dt = suggested_dt
        super().__init__(self.default_detail.format(cfl, suggested_dt), code)
