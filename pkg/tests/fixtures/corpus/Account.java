public class Account {
    // identity and balance
    public String owner;
    public long balance; // cents
    public int version;
    private final java.util.List<String> log = new java.util.ArrayList<>();

    /* Opens an account
       for the given owner. */
    public Account(String owner) {
        this.owner = owner;
    }
    public void deposit(long amount) {
        if (amount <= 0) {
            throw new IllegalArgumentException("amount");
        }
        balance += amount; // no overflow check
        log.add("deposit");
    }
    public boolean withdraw(long amount) {
        // reject overdraft
        if (amount > balance || amount <= 0) {
            return false;
        }
        balance -= amount;
        return true;
    }
    // read-only view
    public long getBalance() { return balance; }
    // entries() was removed in 2.0
}
