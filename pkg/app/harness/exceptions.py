class ScenarioParseException(Exception):
    default_detail = 'Invalid scenario format, line {}: {}'
    default_code = 'invalid'

    def __init__(self, line_num, line, code=None):
        self.line_num = line_num
        self.line = line
        self.code = code or self.default_code
        self.detail = self.default_detail.format(line_num, line)
        super().__init__(self.detail)


class ScenarioError(ScenarioParseException):
    default_detail = 'Invalid scenario value, line {}: {}'
