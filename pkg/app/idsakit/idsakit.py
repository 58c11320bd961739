import argparse
import os
import subprocess
import sys

COMMANDS = {
    'run': 'run',
    'run-boltzmann': 'run_boltzmann',
    'run-idsa': 'run_idsa',
    'compare': 'compare',
    'hierarchy-check': 'hierarchy_check',
    'epsilon-sweep': 'epsilon_sweep',
}


def main():
    parser = argparse.ArgumentParser(description='idsakit, spherically symmetric neutrino transport experiments.')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=f'{name} mode of a scenario file')
        sub.add_argument('--scenario', type=str, required=True, help='scenario file')
        sub.add_argument('--out', type=str, required=True, help='output directory')
        sub.add_argument('--threads', type=int, default=None, help='maximum number of worker threads')
    args = parser.parse_args()

    base = os.path.abspath(os.path.dirname(os.path.dirname(__file__)))
    manage_path = os.path.join(base, 'manage.py')
    command = [sys.executable, manage_path, COMMANDS[args.command],
               '--scenario', os.path.abspath(args.scenario),
               '--out', os.path.abspath(args.out)]
    if args.threads is not None:
        command += ['--threads', str(args.threads)]
    sys.exit(subprocess.call(command, shell=False))


if __name__ == '__main__':
    main()
