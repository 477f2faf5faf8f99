EXAMPLES = """
Examples:

\b
  cellmode simulate --suite 30 --out data/traces
  cellmode smooth data/traces/walking_000.csv --out smoothed.csv
  cellmode features data/traces/*.csv --out instances.csv
  cellmode eval instances.csv --k 5 --seed 42 --format text
  cellmode eval instances.csv --ablation
  cellmode train instances.csv --out model.txt
  cellmode report model.txt held_out.csv --format json
"""
