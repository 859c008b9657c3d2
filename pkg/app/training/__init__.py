"""MPG update rules, schedules and the training loop."""
