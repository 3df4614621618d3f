# Snapshot compressive imaging toolkit package
