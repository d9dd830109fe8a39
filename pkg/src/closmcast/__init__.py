"""Source-routed multicast in three-tier Clos data centers: Elmo vs Bert."""

__version__ = "0.1.0"
