# KGBridge Tests
