from ..base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Solve the Boltzmann equation for a scenario'
    mode = 'boltzmann'
