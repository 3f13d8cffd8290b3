import os
import setuptools
import subprocess
import sys


def shell_command(command, short_description):
    """Create a simple command that is invoked using subprocess."""

    class ShellCommand(setuptools.Command):
        """Run custom script when invoked."""

        description = short_description
        user_options = []

        def initialize_options(self):
            pass

        def finalize_options(self):
            pass

        def run(self):
            sys.exit(subprocess.call(command))

    return ShellCommand


def unittest_command(suite):
    """Get new command for unittest suite."""

    return [
        sys.executable,
        "-m",
        "unittest",
        "discover",
        "-v",
        "-s",
        suite,
        "-p",
        "*_test.py"
    ]


def read_requirements(name):
    with open(os.path.join(HOME, name)) as f:
        return [i for i in f.read().splitlines() if i.strip()]


LICENSE = "Apache-2.0"
NAME = "qimnet"
VERSION = "0.1.0"

DESCRIPTION = "Quantum-inspired density-matrix features for convolutional networks."
LONG_DESCRIPTION = """Builds density matrices from CNN feature maps, convolves them
with learned kernels, and pools them into second-order features. Ships
StandardCNN and LeNet-5 backbones, MNIST and CIFAR loaders, and an
ablation harness writing CSV reports.
"""

PACKAGES = setuptools.find_packages(exclude=["tests"])
HOME = os.path.dirname(os.path.realpath(__file__))
REQUIRES = read_requirements('requirements.txt')
TESTS_REQUIRE = read_requirements('requirements-test.txt')

SCRIPTS = [os.path.join('scripts', i) for i in os.listdir('scripts')]
COMMANDS = {
    'test': shell_command(
        command=unittest_command("tests"),
        short_description="Run unittest suite."
    ),
    'gradcheck': shell_command(
        command=[sys.executable, os.path.join('scripts', 'qim_experiment.py'), 'gradcheck'],
        short_description="Run the gradient gate."
    ),
}

# Sample experiment configurations to install.
DATA_FILES = [
    (os.path.join(os.path.expanduser('~'), '.qimnet', 'config'), [
        'config/mnist_standardcnn.cfg',
        'config/mnist_standardcnn_qim.cfg',
        'config/fashion_lenet5_qim.cfg',
        'config/cifar10_subset_qim.cfg',
    ]),
]

setuptools.setup(
    install_requires=REQUIRES,
    tests_require=TESTS_REQUIRE,
    extras_require={'test': TESTS_REQUIRE},
    python_requires=">=3.8",
    scripts=SCRIPTS,
    data_files=DATA_FILES,
    packages=PACKAGES,
    cmdclass=COMMANDS,
    zip_safe=False,
    name=NAME,
    version=VERSION,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    license=LICENSE,
)
