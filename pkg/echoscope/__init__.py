"""
echoscope: offline TLS side-channel privacy auditor and attack simulator.
"""

__version__ = "0.1.0"
