from ..base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Run both solvers and write the comparison summary'
    mode = 'compare'
