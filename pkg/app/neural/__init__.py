"""Neural preference models: MLPs with manual backprop and tangent-kernel checks."""
