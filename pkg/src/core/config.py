"""
Configuration module for the reversible-chaos toolkit.
Loads environment variables for the integrator, geometry, certification and output settings.
"""
import os
from dotenv import load_dotenv

load_dotenv()

# Integrator Configuration
REL_TOL = float(os.getenv('RC_REL_TOL', '1e-10'))
ABS_TOL = float(os.getenv('RC_ABS_TOL', '1e-12'))
MAX_STEP = float(os.getenv('RC_MAX_STEP', '0.25'))
MAX_TIME = float(os.getenv('RC_MAX_TIME', '5000'))
ESCAPE_RADIUS = float(os.getenv('RC_ESCAPE_RADIUS', '1e6'))

# Geometry Configuration
CHORD_FRACTION = float(os.getenv('RC_CHORD_FRACTION', '1e-3'))
LINKAGE_GRID = int(os.getenv('RC_LINKAGE_GRID', '161'))

# Certification Configuration
SAMPLES = int(os.getenv('RC_SAMPLES', '64'))
GRID = int(os.getenv('RC_GRID', '16'))
PATHS = int(os.getenv('RC_PATHS', '8'))
STRIP_SLACK = float(os.getenv('RC_STRIP_SLACK', '0.01'))
MARGIN_FLOOR = float(os.getenv('RC_MARGIN_FLOOR', '0.05'))
SEED = int(os.getenv('RC_SEED', '0'))

# Output / Runtime Configuration
OUTPUT_DIR = os.getenv('RC_OUTPUT_DIR', 'output')
SCAN_WORKERS = int(os.getenv('RC_SCAN_WORKERS', '4'))
LOG_LEVEL = os.getenv('RC_LOG_LEVEL', 'INFO')
