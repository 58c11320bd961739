from ..base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Check the Hilbert hierarchy residuals of a scenario'
    mode = 'hierarchy-check'
