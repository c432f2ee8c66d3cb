import pytest

from qrbackup.bundle import RecoveryInstruction, VerificationPolicy
from qrbackup.crypto import generate_identity_keypair
from qrbackup.entropy import SeededRandomness
from qrbackup.protocol import InMemoryDirectory, TrusteeDescriptor


@pytest.fixture
def rng():
    return SeededRandomness("tests")


@pytest.fixture(scope="session")
def owner():
    return generate_identity_keypair(SeededRandomness("owner"))


@pytest.fixture(scope="session")
def trustee_keys():
    r = SeededRandomness("trustees")
    return [generate_identity_keypair(r) for _ in range(8)]


@pytest.fixture(scope="session")
def instruction(owner):
    return RecoveryInstruction(
        owner_display_name="Alice Example",
        owner_key_fingerprint=owner.public_key.fingerprint(),
        directory_locator="alice@example.org",
        verification_policy=VerificationPolicy.LIVE_VIDEO,
        legal_agent=None,
        freeform_note="call me on the usual number",
    )


@pytest.fixture
def directory(owner):
    return InMemoryDirectory({"alice@example.org": owner.public_key})


def descriptors(keys):
    return [TrusteeDescriptor(f"trustee-{i}", kp.public_key) for i, kp in enumerate(keys)]


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
