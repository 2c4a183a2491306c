"""Group-aggregation transformer for fraud detection on multi-relational graphs."""
