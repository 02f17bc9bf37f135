"""Cartel screens, statistical tests and a super-learner detector for Italian
MSD/MGP electricity auctions."""

__version__ = "0.1.0"
