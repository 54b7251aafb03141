package billing;

import java.util.Random;

public class InvoiceService {
  private final PaymentGateway gateway = new PaymentGateway();

  public void charge(Invoice invoice) {
    try {
      gateway.pay(invoice.getAmount());
    } catch (Exception e) {
      return;
    }
  }

  public boolean isOverdue(Invoice invoice) {
    return invoice.getDue() < System.currentTimeMillis();
  }

  public String reference(Invoice invoice) {
    Random random = new Random();
    int suffix = random.nextInt(1000);
    return "INV-" + invoice.getId() + "-" + suffix;
  }

  public long total(Invoice[] invoices) {
    long sum = 0;
    for (int i = 0; i < invoices.length; i++) {
      sum += invoices[i].getAmount();
    }
    return sum;
  }
}
