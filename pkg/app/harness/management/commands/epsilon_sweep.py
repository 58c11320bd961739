from ..base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Measure the convergence order towards a limit equation'
    mode = 'epsilon-sweep'
