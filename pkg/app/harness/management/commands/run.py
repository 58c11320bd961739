from ..base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Run the mode named by the scenario file'
    mode = None
