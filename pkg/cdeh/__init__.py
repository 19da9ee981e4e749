"""IRS-assisted RSMA mobile-edge-computing simulator and hierarchical TD3/DQN trainer"""

__version__ = "0.1.0"
