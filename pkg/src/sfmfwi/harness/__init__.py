"""Config parsing, scenario presets, experiment orchestration and reporting."""
