from pathlib import Path

PACKAGE_DIR = Path(__file__).resolve().parent
DATA_DIR = PACKAGE_DIR / "data"
ETF_TAXONOMY_FILE = DATA_DIR / "etf_taxonomy.csv"
SIC_GROUPS_FILE = DATA_DIR / "sic_major_groups.csv"
