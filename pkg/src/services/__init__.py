# Model, training, inference and I/O services
