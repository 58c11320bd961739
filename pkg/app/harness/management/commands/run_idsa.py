from ..base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Evolve a scenario with the isotropic diffusion source approximation'
    mode = 'idsa'
