import time

SESSION_START = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    # acceptance checks run last so the runtime budget covers the whole suite
    items.sort(key=lambda item: item.module.__name__.endswith("test_acceptance"))
