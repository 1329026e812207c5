__title__ = 'ceropt'
__description__ = 'Trajectory optimization, simulation and hybrid LQR tracking for clutched-elastic robot joints'
__version__ = '0.1.0'
__author__ = [
    "ceropt developers",
]
__author_email__ = 'ceropt@users.noreply.github.com'
__url__ = 'https://github.com/ceropt/ceropt'
