def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: secondary acceptance checks")
